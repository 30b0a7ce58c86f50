use glyphforge::boxfile::{parse_box_file, write_box_file};
use glyphforge::bundle::load_bundle;
use glyphforge::config::ProjectConfig;
use glyphforge::eval::{build_report, match_boxes, DatasetManifest, Role};
use glyphforge::pipeline::{train_from_pages, Lexicon};
use glyphforge::raster::{self, io};
use glyphforge::recognize::recognize_gray;
use glyphforge::synth::{generate_corpus, CorpusSpec};
use glyphforge::training::ClusterParams;

#[test]
fn corpus_on_disk_trains_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate_corpus(&CorpusSpec { training_glyphs: 300, td1_glyphs: 45, td2_glyphs: 40, ..CorpusSpec::default() });
    let manifest = corpus.manifest();
    for (page, entry) in corpus.pages.iter().zip(&manifest.pages) {
        std::fs::write(dir.path().join(&entry.image), io::encode_png(&page.page.gray, page.page.dpi)).unwrap();
        std::fs::write(dir.path().join(&entry.boxes), write_box_file(&page.page.boxes).unwrap()).unwrap();
    }
    std::fs::write(dir.path().join("manifest.toml"), manifest.to_toml()).unwrap();

    let text = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
    let manifest = DatasetManifest::from_toml(&text).unwrap().resolve(dir.path());
    let load = |i: usize| {
        let p = &manifest.pages[i];
        let decoded = io::load_page(&p.image).unwrap();
        assert_eq!(decoded.dpi, Some(300));
        let boxes = parse_box_file(&std::fs::read(&p.boxes).unwrap()).unwrap();
        (decoded.gray, boxes)
    };

    let training: Vec<_> = manifest
        .pages_with_role(Role::Training)
        .map(|(i, _)| {
            let (gray, boxes) = load(i);
            (raster::binarize(&gray, 300, false).unwrap(), boxes)
        })
        .collect();
    let trained = train_from_pages("num", &training, &Lexicon::default(), &ClusterParams::default()).unwrap();
    let tessdata = dir.path().join("tessdata");
    trained.bundle.write_to(&tessdata).unwrap();
    let bundle = load_bundle(&tessdata, "num").unwrap();
    assert_eq!(bundle, trained.bundle);

    let config = ProjectConfig::default();
    let mut results = Vec::new();
    for (i, p) in manifest.pages.iter().enumerate().filter(|(_, p)| p.role != Role::Training) {
        let (gray, truth) = load(i);
        let result = recognize_gray(&gray, 300, false, &bundle, &config.recognize_params()).unwrap();
        assert!(!result.text.is_empty(), "{}", p.image.display());
        results.push((i, match_boxes(&truth, &result, config.iou_threshold)));
    }
    let report = build_report(&manifest, &results, &config).unwrap();
    assert_eq!(report.row("td1").unwrap().total, 45);
    assert_eq!(report.row("td2").unwrap().total, 40);
    assert!(report.row("td1").unwrap().success_pct.unwrap() > 70.0, "{}", report.render_text());
}

#[test]
fn inverted_pages_need_the_invert_flag() {
    let corpus = generate_corpus(&CorpusSpec { training_glyphs: 60, td1_glyphs: 0, td2_glyphs: 0, ..CorpusSpec::default() });
    let page = &corpus.pages[0].page;
    let mut negative = page.gray.clone();
    negative.data.iter_mut().for_each(|v| *v = 255 - *v);
    let normal = raster::binarize(&page.gray, 300, false).unwrap();
    let inverted = raster::binarize(&negative, 300, true).unwrap();
    assert_eq!(normal.pixels, inverted.pixels);
}
