//! Subcommands mirroring the training and recognition pipeline.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};

use glyphforge::boxfile::{extract_unicharset, parse_box_file, write_box_file, BoxPage, Unicharset};
use glyphforge::bundle::{self, assemble_bundle, BundleParts, Component, LangBundle};
use glyphforge::config::ProjectConfig;
use glyphforge::eval::{build_report, frequency_report, match_boxes, DatasetManifest, Role};
use glyphforge::features::{build_training_file, TrainingFile};
use glyphforge::lexicon::{build_dawg, parse_wordlist};
use glyphforge::pipeline::{train_from_pages, Lexicon};
use glyphforge::raster::{self, io, Bitmap};
use glyphforge::recognize::{propose_boxes, recognize_page};
use glyphforge::synth::{generate_corpus, CorpusSpec};
use glyphforge::training::{cluster_cn, cluster_micro, ClassFrequencies};

#[derive(Debug, Parser)]
#[command(name = "glyphforge", version, about = "Handwritten digit OCR training and recognition pipeline")]
pub struct Cli {
    /// Project configuration file (TOML key/value pairs).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Bundle directory; overrides the configuration file.
    #[arg(long, global = true, env = "GLYPHFORGE_TESSDATA")]
    tessdata: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Segment a page and write a proposed box file.
    Makebox {
        image: PathBuf,
        out: PathBuf,
        #[arg(short, long)]
        lang: Option<String>,
    },
    /// Extract features for every box of a labelled page.
    Train {
        image: PathBuf,
        boxes: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Cluster micro-features into `inttemp` and `pffmtable`.
    Mftrain {
        #[arg(required = true)]
        tr: Vec<PathBuf>,
        #[arg(short = 'U', long)]
        unicharset: Option<PathBuf>,
        #[arg(short, long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Compute per-class CN statistics into `normproto`.
    Cntrain {
        #[arg(required = true)]
        tr: Vec<PathBuf>,
        #[arg(short = 'U', long)]
        unicharset: Option<PathBuf>,
        #[arg(short, long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Collect the glyph set of one or more box files.
    UnicharsetExtract {
        #[arg(required = true)]
        boxes: Vec<PathBuf>,
        #[arg(short, long, default_value = "unicharset")]
        out: PathBuf,
    },
    /// Compile a word list into a DAWG file.
    Wordlist2dawg {
        wordlist: PathBuf,
        out: PathBuf,
        #[arg(short = 'U', long)]
        unicharset: Option<PathBuf>,
    },
    /// Assemble component files into a `<lang>.` prefixed bundle.
    Bundle {
        #[arg(short, long)]
        lang: String,
        parts: Vec<PathBuf>,
        #[arg(short, long)]
        out_dir: Option<PathBuf>,
    },
    /// Recognize a page.
    Recognize {
        image: PathBuf,
        #[arg(short, long)]
        lang: Option<String>,
        #[arg(short, long)]
        out: PathBuf,
        /// Write a box file of the recognized glyphs instead of text.
        #[arg(long)]
        boxes: bool,
        /// Also write the full result as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Evaluate the test pages of a dataset manifest.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(short, long)]
        lang: Option<String>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Per-glyph sample counts of a dataset manifest.
    Freq {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        csv: bool,
    },
    /// Serve the box-correction HTTP API.
    ServeLabel {
        #[arg(long)]
        root: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(short, long)]
        lang: Option<String>,
    },
    /// Write a synthetic handwritten digit dataset with a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also train a bundle from the training pages into `<out>/tessdata`.
        #[arg(long)]
        bundle: bool,
    },
}

#[derive(Debug)]
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn fail(msg: impl Into<String>) -> Failure {
    Failure(msg.into())
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| fail(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| fail(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| fail(format!("{}: {e}", path.display())))
}

struct Context {
    config: ProjectConfig,
    tessdata: PathBuf,
}

impl Context {
    fn lang<'a>(&'a self, flag: &'a Option<String>) -> &'a str {
        flag.as_deref().unwrap_or(&self.config.lang_code)
    }

    fn load_bitmap(&self, image: &Path) -> Result<Bitmap, Failure> {
        let decoded = io::load_page(image).map_err(|e| fail(format!("{}: {e}", image.display())))?;
        Ok(raster::binarize(&decoded.gray, decoded.dpi.unwrap_or(self.config.dpi), self.config.invert)?)
    }

    fn bundle(&self, lang: &str) -> Result<LangBundle, Failure> {
        bundle::load_bundle(&self.tessdata, lang).map_err(|e| fail(format!("{}: {e}", self.tessdata.display())))
    }
}

fn load_training_files(paths: &[PathBuf]) -> Result<Vec<TrainingFile>, Failure> {
    paths
        .iter()
        .map(|p| TrainingFile::from_bytes(&read(p)?, p.display().to_string()).map_err(|e| fail(format!("{}: {e}", p.display()))))
        .collect()
}

fn load_unicharset(path: &Option<PathBuf>) -> Result<Option<Unicharset>, Failure> {
    path.as_ref()
        .map(|p| {
            let text = String::from_utf8(read(p)?).map_err(|e| fail(format!("{}: {e}", p.display())))?;
            Unicharset::from_text(&text).map_err(|e| fail(format!("{}: {e}", p.display())))
        })
        .transpose()
}

fn load_manifest(path: &Path) -> Result<DatasetManifest, Failure> {
    let text = String::from_utf8(read(path)?).map_err(|e| fail(format!("{}: {e}", path.display())))?;
    let manifest = DatasetManifest::from_toml(&text).map_err(|e| fail(format!("{}: {e}", path.display())))?;
    Ok(manifest.resolve(path.parent().unwrap_or(Path::new("."))))
}

fn load_boxes(path: &Path) -> Result<BoxPage, Failure> {
    parse_box_file(&read(path)?).map_err(|e| fail(format!("{}: {e}", path.display())))
}

fn warn_skipped(skipped: &[char]) {
    for g in skipped {
        eprintln!("warning: class {g:?} has no training samples and was skipped");
    }
}

fn execute(command: Command, ctx: &Context) -> CliResult {
    match command {
        Command::Makebox { image, out, lang } => {
            let bitmap = ctx.load_bitmap(&image)?;
            let bundle = crate::load_optional_bundle(&ctx.tessdata, ctx.lang(&lang))?;
            if bundle.is_none() {
                eprintln!("no bundle in {}; labelling every box '?'", ctx.tessdata.display());
            }
            let boxes = propose_boxes(&bitmap, bundle.as_ref(), &ctx.config.recognize_params())?;
            write(&out, write_box_file(&boxes)?)
        }
        Command::Train { image, boxes, out } => {
            let bitmap = ctx.load_bitmap(&image)?;
            let outcome = build_training_file(&bitmap, &load_boxes(&boxes)?, image.display().to_string())?;
            if outcome.empty_boxes > 0 {
                eprintln!("warning: {} boxes held no ink and were skipped", outcome.empty_boxes);
            }
            write(&out, outcome.file.to_bytes())
        }
        Command::Mftrain { tr, unicharset, out_dir } => {
            let files = load_training_files(&tr)?;
            let uni = load_unicharset(&unicharset)?;
            let micro = cluster_micro(&files, uni.as_ref(), &ctx.config.cluster_params())?;
            warn_skipped(&micro.skipped);
            write(&out_dir.join(Component::Inttemp.suffix()), bundle::encode_inttemp(&micro.result))?;
            write(
                &out_dir.join(Component::Pffmtable.suffix()),
                bundle::encode_pffmtable(&ClassFrequencies::from_files(&files)),
            )
        }
        Command::Cntrain { tr, unicharset, out_dir } => {
            let files = load_training_files(&tr)?;
            let uni = load_unicharset(&unicharset)?;
            let cn = cluster_cn(&files, uni.as_ref())?;
            warn_skipped(&cn.skipped);
            write(&out_dir.join(Component::Normproto.suffix()), bundle::encode_normproto(&cn.result))
        }
        Command::UnicharsetExtract { boxes, out } => {
            let pages = boxes.iter().map(|p| load_boxes(p)).collect::<Result<Vec<_>, _>>()?;
            write(&out, extract_unicharset(&pages)?.to_text())
        }
        Command::Wordlist2dawg { wordlist, out, unicharset } => {
            let mut words = parse_wordlist(&read(&wordlist)?)?;
            words.sort();
            words.dedup();
            let alphabet = load_unicharset(&unicharset)?.map(|u| u.glyphs().collect::<Vec<_>>());
            write(&out, build_dawg(&words, alphabet.as_deref())?.to_bytes())
        }
        Command::Bundle { lang, parts, out_dir } => {
            let mut collected = BundleParts::default();
            for p in &parts {
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                let component = Component::from_file_name(name)
                    .ok_or_else(|| fail(format!("{}: not a bundle component file name", p.display())))?;
                collected.load_part(component, &read(p)?)?;
            }
            let bundle = assemble_bundle(&lang, collected)?;
            let dir = out_dir.unwrap_or_else(|| ctx.tessdata.clone());
            for path in bundle.write_to(&dir)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Recognize { image, lang, out, boxes, json } => {
            let bundle = ctx.bundle(ctx.lang(&lang))?;
            let bitmap = ctx.load_bitmap(&image)?;
            let result = recognize_page(&bitmap, &bundle, &ctx.config.recognize_params())?;
            for (i, line) in result.lines.iter().enumerate() {
                if let Some(s) = &line.dictionary.suggestion {
                    eprintln!("line {}: {:?} is not in the dictionary; did you mean {s:?}?", i + 1, line.raw);
                }
            }
            if boxes {
                write(&out, write_box_file(&result.to_box_page())?)?;
            } else {
                write(&out, format!("{}\n", result.text))?;
            }
            if let Some(path) = json {
                write(&path, serde_json::to_string_pretty(&result)?)?;
            }
            Ok(())
        }
        Command::Eval { manifest, lang, json } => {
            let manifest = load_manifest(&manifest)?;
            let bundle = ctx.bundle(ctx.lang(&lang))?;
            let params = ctx.config.recognize_params();
            let mut results = Vec::new();
            for (i, page) in manifest.pages.iter().enumerate().filter(|(_, p)| p.role != Role::Training) {
                let bitmap = ctx.load_bitmap(&page.image)?;
                let truth = load_boxes(&page.boxes)?;
                let result = recognize_page(&bitmap, &bundle, &params)?;
                results.push((i, match_boxes(&truth, &result, ctx.config.iou_threshold)));
            }
            let report = build_report(&manifest, &results, &ctx.config)?;
            print!("{}", report.render_text());
            if let Some(path) = json {
                write(&path, report.to_json())?;
            }
            Ok(())
        }
        Command::Freq { manifest, csv } => {
            let manifest = load_manifest(&manifest)?;
            let boxes = manifest.pages.iter().map(|p| load_boxes(&p.boxes)).collect::<Result<Vec<_>, _>>()?;
            let report = frequency_report(&manifest, &boxes);
            print!("{}", if csv { report.to_csv() } else { report.render_text() });
            Ok(())
        }
        Command::ServeLabel { root, port, host, lang } => {
            if !root.is_dir() {
                return Err(fail(format!("{}: not a directory", root.display())));
            }
            let state = Arc::new(crate::server::AppState::new(
                root,
                ctx.tessdata.clone(),
                ctx.lang(&lang).to_string(),
                ctx.config.dpi,
                ctx.config.invert,
                ctx.config.recognize_params(),
            ));
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
                eprintln!("serving on http://{}", listener.local_addr()?);
                axum::serve(listener, crate::server::router(state)).await
            })?;
            Ok(())
        }
        Command::Synth { out, seed, bundle } => {
            let corpus = generate_corpus(&CorpusSpec { seed, ..CorpusSpec::default() });
            let manifest = corpus.manifest();
            let mut training = Vec::new();
            for (page, entry) in corpus.pages.iter().zip(&manifest.pages) {
                write(&out.join(&entry.image), io::encode_png(&page.page.gray, page.page.dpi))?;
                write(&out.join(&entry.boxes), write_box_file(&page.page.boxes)?)?;
                if bundle && page.role == Role::Training {
                    training.push((raster::binarize(&page.page.gray, page.page.dpi, false)?, page.page.boxes.clone()));
                }
            }
            write(&out.join("manifest.toml"), manifest.to_toml())?;
            if bundle {
                let config = ProjectConfig { seed, ..ctx.config.clone() };
                let trained = train_from_pages(&config.lang_code, &training, &Lexicon::default(), &config.cluster_params())?;
                trained.bundle.write_to(&out.join("tessdata"))?;
            }
            println!("wrote {} pages to {}", corpus.pages.len(), out.display());
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and runs one subcommand.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let config = match &cli.config {
        Some(path) => match std::fs::read_to_string(path).map_err(Failure::from).and_then(|t| ProjectConfig::from_toml(&t).map_err(Failure::from)) {
            Ok(c) => c,
            Err(Failure(msg)) => {
                eprintln!("error: {}: {msg}", path.display());
                return 2;
            }
        },
        None => ProjectConfig::default(),
    };
    let tessdata = cli.tessdata.clone().unwrap_or_else(|| config.tessdata.clone());
    let ctx = Context { config, tessdata };
    match execute(cli.command, &ctx) {
        Ok(()) => 0,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}
