//! End-to-end helpers: train a bundle from labelled pages and evaluate
//! recognition against ground truth.

use thiserror::Error;

use crate::boxfile::{self, BoxError, BoxPage, Unicharset};
use crate::bundle::{assemble_bundle, BundleError, BundleParts, LangBundle};
use crate::config::ProjectConfig;
use crate::eval::{self, EvalError, EvalReport, PageEvaluation, Role};
use crate::features::{self, FeatureError, TrainingFile};
use crate::lexicon::{self, AmbigTable, Dawg, LexiconError};
use crate::raster::{self, Bitmap, RasterError};
use crate::recognize::{self, PageResult, RecognizeError, RecognizeParams};
use crate::synth::SynthCorpus;
use crate::training::{self, ClassFrequencies, ClusterParams, TrainingError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Box(#[from] BoxError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Recognize(#[from] RecognizeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Word lists and ambiguity rules that go into a bundle.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    pub frequent_words: Vec<String>,
    pub words: Vec<String>,
    pub user_words: Vec<String>,
    pub ambigs: AmbigTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedBundle {
    pub bundle: LangBundle,
    /// Unicharset classes without any training sample.
    pub skipped_classes: Vec<char>,
    pub empty_boxes: usize,
}

fn dawg(words: &[String], alphabet: &[char]) -> Result<Dawg, LexiconError> {
    let mut sorted = words.to_vec();
    sorted.sort();
    sorted.dedup();
    lexicon::build_dawg(&sorted, Some(alphabet))
}

/// Clusters already extracted training files into a complete bundle.
pub fn train_from_files(
    lang: &str,
    unicharset: &Unicharset,
    files: &[TrainingFile],
    lexicon: &Lexicon,
    params: &ClusterParams,
) -> Result<TrainedBundle, PipelineError> {
    let micro = training::cluster_micro(files, Some(unicharset), params)?;
    let cn = training::cluster_cn(files, Some(unicharset))?;
    let alphabet: Vec<char> = unicharset.glyphs().collect();
    let parts = BundleParts {
        unicharset: Some(unicharset.clone()),
        prototypes: Some(micro.result),
        normprotos: Some(cn.result),
        frequencies: Some(ClassFrequencies::from_files(files)),
        freq_dawg: Some(dawg(&lexicon.frequent_words, &alphabet)?),
        word_dawg: Some(dawg(&lexicon.words, &alphabet)?),
        user_words: Some(dawg(&lexicon.user_words, &alphabet)?),
        ambigs: Some(lexicon.ambigs.clone()),
    };
    Ok(TrainedBundle {
        bundle: assemble_bundle(lang, parts)?,
        skipped_classes: micro.skipped,
        empty_boxes: 0,
    })
}

/// Extracts features from labelled binary pages and trains a bundle.
pub fn train_from_pages(
    lang: &str,
    pages: &[(Bitmap, BoxPage)],
    lexicon: &Lexicon,
    params: &ClusterParams,
) -> Result<TrainedBundle, PipelineError> {
    let boxes: Vec<BoxPage> = pages.iter().map(|(_, b)| b.clone()).collect();
    let unicharset = boxfile::extract_unicharset(&boxes)?;
    let mut files = Vec::with_capacity(pages.len());
    let mut empty_boxes = 0;
    for (i, (bitmap, bp)) in pages.iter().enumerate() {
        let outcome = features::build_training_file(bitmap, bp, format!("page{i}"))?;
        empty_boxes += outcome.empty_boxes;
        files.push(outcome.file);
    }
    let mut trained = train_from_files(lang, &unicharset, &files, lexicon, params)?;
    trained.empty_boxes = empty_boxes;
    Ok(trained)
}

/// Recognizes a page and scores it against its ground-truth boxes.
pub fn evaluate_page(
    page: &Bitmap,
    truth: &BoxPage,
    bundle: &LangBundle,
    params: &RecognizeParams,
    iou_threshold: f64,
) -> Result<(PageResult, PageEvaluation), PipelineError> {
    let result = recognize::recognize_page(page, bundle, params)?;
    let evaluation = eval::match_boxes(truth, &result, iou_threshold);
    Ok((result, evaluation))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRun {
    pub trained: TrainedBundle,
    pub report: EvalReport,
}

/// Trains on the corpus training pages and evaluates every test page.
pub fn run_corpus(corpus: &SynthCorpus, config: &ProjectConfig, lexicon: &Lexicon) -> Result<CorpusRun, PipelineError> {
    let mut training_pages = Vec::new();
    let mut test_pages = Vec::new();
    for (i, p) in corpus.pages.iter().enumerate() {
        let bitmap = raster::binarize(&p.page.gray, p.page.dpi, config.invert)?;
        if p.role == Role::Training {
            training_pages.push((bitmap, p.page.boxes.clone()));
        } else {
            test_pages.push((i, bitmap));
        }
    }
    let trained = train_from_pages(&config.lang_code, &training_pages, lexicon, &config.cluster_params())?;
    let params = config.recognize_params();
    let mut results = Vec::with_capacity(test_pages.len());
    for (i, bitmap) in &test_pages {
        let (_, evaluation) = evaluate_page(bitmap, &corpus.pages[*i].page.boxes, &trained.bundle, &params, config.iou_threshold)?;
        results.push((*i, evaluation));
    }
    let report = eval::build_report(&corpus.manifest(), &results, config)?;
    Ok(CorpusRun { trained, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_corpus, CorpusSpec};

    #[test]
    fn small_corpus_round_trip() {
        let spec = CorpusSpec { training_glyphs: 300, td1_glyphs: 60, td2_glyphs: 60, ..CorpusSpec::default() };
        let corpus = generate_corpus(&spec);
        let lexicon = Lexicon { frequent_words: vec!["10".into()], words: vec!["10".into(), "2024".into()], ..Lexicon::default() };
        let run = run_corpus(&corpus, &ProjectConfig::default(), &lexicon).unwrap();
        assert_eq!(run.trained.bundle.unicharset.len(), 10);
        assert!(run.trained.skipped_classes.is_empty());
        assert_eq!(run.trained.empty_boxes, 0);
        assert!(run.trained.bundle.word_dawg.contains("2024"));
        let td1 = run.report.row("td1").unwrap();
        assert_eq!(td1.total, 60);
        assert!(td1.success_pct.unwrap() > 50.0, "{}", run.report.render_text());
    }

    #[test]
    fn lexicon_outside_alphabet_fails() {
        let spec = CorpusSpec { training_glyphs: 40, td1_glyphs: 3, td2_glyphs: 2, ..CorpusSpec::default() };
        let corpus = generate_corpus(&spec);
        let lexicon = Lexicon { words: vec!["abc".into()], ..Lexicon::default() };
        assert!(matches!(
            run_corpus(&corpus, &ProjectConfig::default(), &lexicon),
            Err(PipelineError::Lexicon(LexiconError::UnknownGlyph { .. }))
        ));
    }
}
